fn main() {
    std::process::exit(hsse::cli::run(std::env::args_os()));
}
