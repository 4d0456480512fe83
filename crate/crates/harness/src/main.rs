fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (code, line) = layerkv_harness::cli::run(std::env::args_os());
    if code == 0 {
        println!("{}", line.trim_end());
    } else {
        eprintln!("{line}");
    }
    std::process::exit(code);
}
