fn main() {
    std::process::exit(emitter_coherence::cli::run(std::env::args_os()));
}
