fn main() {
    std::process::exit(phcharts::cli::main_with_args(std::env::args_os()));
}
