fn main() {
    std::process::exit(molxr::server::serve_main(std::env::args_os()));
}
