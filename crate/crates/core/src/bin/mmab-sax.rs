fn main() {
    std::process::exit(mmab_sax::cli::main(std::env::args_os()));
}
