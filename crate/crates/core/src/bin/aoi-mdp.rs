fn main() {
    aoi_mdp::cli::init_logging();
    std::process::exit(aoi_mdp::cli::run(std::env::args_os()));
}
