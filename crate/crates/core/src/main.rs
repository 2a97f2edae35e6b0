fn main() {
    std::process::exit(coupled_rec::cli::run(std::env::args_os()));
}
