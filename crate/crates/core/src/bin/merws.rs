fn main() -> std::process::ExitCode {
    merws::harness::main()
}
