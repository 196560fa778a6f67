fn main() -> std::process::ExitCode {
    demplast::cli::main()
}
