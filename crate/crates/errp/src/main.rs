fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ERRP_LOG", "warn")).init();
    std::process::exit(errp::cli::main_with(std::env::args_os()));
}
