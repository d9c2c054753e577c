use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SUBCOL_LOG", "warn")).init();
    let cli = subcol::Cli::parse();
    let code = subcol::run(&cli, &mut std::io::stdout().lock());
    std::process::exit(code);
}
