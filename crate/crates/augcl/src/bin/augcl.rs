fn main() {
    std::process::exit(augcl::cli::run_cli(std::env::args_os()));
}
