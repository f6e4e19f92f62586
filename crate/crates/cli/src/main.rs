fn main() {
    std::process::exit(idcl_cli::run(std::env::args_os()));
}
