fn main() -> std::process::ExitCode {
    octx::cli::main()
}
