fn main() {
    std::process::exit(voxdet::cli::run(std::env::args_os()));
}
