fn main() {
    std::process::exit(roadtagger::cli::run(std::env::args_os()));
}
