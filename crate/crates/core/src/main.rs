fn main() {
    std::process::exit(osmargin::cli::run(std::env::args_os()));
}
