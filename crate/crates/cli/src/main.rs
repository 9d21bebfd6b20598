fn main() {
    std::process::exit(dirform_cli::run(std::env::args_os()));
}
