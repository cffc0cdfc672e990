fn main() {
    std::process::exit(orrw::cli::dispatch(std::env::args_os()));
}
