fn main() {
    std::process::exit(pose_consensus::cli::main_with_args(std::env::args_os()));
}
