fn main() -> std::process::ExitCode {
    autoguide::cli::main()
}
