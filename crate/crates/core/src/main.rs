fn main() {
    std::process::exit(uwsim::cli_report::run(std::env::args_os()));
}
