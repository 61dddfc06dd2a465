fn main() {
    std::process::exit(shared_dml::experiment::cli_main(std::env::args_os()));
}
