fn main() {
    std::process::exit(segqc::cli_main());
}
