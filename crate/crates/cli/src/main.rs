fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    randfrob_cli::init_threads();
    std::process::exit(randfrob_cli::run_command(std::env::args_os()));
}
