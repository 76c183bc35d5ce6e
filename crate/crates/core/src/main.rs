use clap::Parser;

fn main() {
    let args = outmin::cli::Args::parse();
    match outmin::cli::run(&args) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    }
}
