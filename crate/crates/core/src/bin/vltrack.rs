fn main() {
    std::process::exit(vltrack::cli::main(std::env::args_os()));
}
