fn main() {
    std::process::exit(carnot_heat::cli::run_from(std::env::args_os()));
}
