fn main() -> std::process::ExitCode {
    divesight::cli::main()
}
