fn main() -> std::process::ExitCode {
    behavior_cloak::cli::run(std::env::args_os())
}
