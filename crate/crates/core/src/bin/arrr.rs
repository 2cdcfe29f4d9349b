fn main() {
    std::process::exit(arrr::cli::run(std::env::args_os()));
}
