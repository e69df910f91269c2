fn main() {
    std::process::exit(codedevent::cli::run(std::env::args_os()));
}
