fn main() -> std::process::ExitCode {
    halfcrystal::cli::main_with(std::env::args_os())
}
