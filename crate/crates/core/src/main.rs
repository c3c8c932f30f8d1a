fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LINKFORGE_LOG", "warn")).init();
    std::process::exit(linkforge::cli::run(std::env::args_os()));
}
