use std::io;

fn main() {
    let env_seed = std::env::var(mtgopt::cli::SEED_ENV).ok();
    let code = mtgopt::cli::run(
        std::env::args_os(),
        env_seed.as_deref(),
        &mut io::stdout(),
        &mut io::stderr(),
    );
    std::process::exit(code);
}
