fn main() {
    std::process::exit(sshqp::cli::main_with(std::env::args_os()));
}
