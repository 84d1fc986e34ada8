fn main() {
    std::process::exit(hankel_sysid::cli::run(std::env::args_os()));
}
