fn main() -> std::process::ExitCode {
    dysaug::cli::main_with_args(std::env::args_os())
}
