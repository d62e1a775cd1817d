fn main() {
    std::process::exit(node_escm::cli::run(std::env::args_os()));
}
