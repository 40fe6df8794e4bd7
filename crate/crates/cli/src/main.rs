fn main() {
    std::process::exit(seqseg_cli::run(std::env::args_os()));
}
