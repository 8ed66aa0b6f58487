fn main() {
    let env = |k: &str| std::env::var(k).ok();
    let code = splanner::cli::main_with(
        std::env::args_os(),
        &env,
        &mut std::io::stdout(),
        &mut std::io::stderr(),
    );
    std::process::exit(code);
}
