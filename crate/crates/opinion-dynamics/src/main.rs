fn main() {
    std::process::exit(opinion_dynamics::cli::run_cli(std::env::args()));
}
