fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_target(false).init();
    std::process::exit(deliberate_cli::run(std::env::args_os()));
}
