fn main() -> std::process::ExitCode {
    contentforge::main_with_args(std::env::args())
}
