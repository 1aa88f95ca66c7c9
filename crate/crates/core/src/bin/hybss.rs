fn main() -> std::process::ExitCode {
    hybss::cli::run(std::env::args_os())
}
