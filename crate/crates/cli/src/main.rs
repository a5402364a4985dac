fn main() {
    if let Err(e) = qgrl_cli::run(std::env::args().collect()) {
        eprintln!("error: {}", qgrl_cli::one_line(&e));
        std::process::exit(1);
    }
}
