fn main() {
    std::process::exit(fdlab_core::cli::run(std::env::args_os()));
}
