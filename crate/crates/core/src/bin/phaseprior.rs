fn main() {
    std::process::exit(phaseprior::cli::run(std::env::args_os()));
}
