fn main() {
    std::process::exit(lqgsdp::cli::dispatch(std::env::args_os()));
}
