fn main() {
    std::process::exit(otfs_mimo::cli::run(std::env::args_os()));
}
