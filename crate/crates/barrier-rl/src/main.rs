fn main() {
    std::process::exit(barrier_rl::harness::cli::run(std::env::args()));
}
