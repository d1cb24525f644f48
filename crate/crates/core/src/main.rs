fn main() {
    std::process::exit(cmx::bench::cli_main(std::env::args_os()));
}
