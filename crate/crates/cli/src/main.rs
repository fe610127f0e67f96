fn main() {
    std::process::exit(agentsim_cli::run(std::env::args_os()));
}
