fn main() {
    std::process::exit(signalcraft::cli::dispatch(std::env::args_os()));
}
