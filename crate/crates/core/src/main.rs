fn main() -> std::process::ExitCode {
    visent::cli::main_entry()
}
