fn main() {
    let code = indoor_lab::cli::main(std::env::args_os());
    std::process::exit(code);
}
