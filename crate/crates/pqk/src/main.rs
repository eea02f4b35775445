fn main() -> std::process::ExitCode {
    pqk::cli::main()
}
