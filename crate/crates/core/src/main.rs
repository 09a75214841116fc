fn main() {
    // Behave like other command-line tools when piped into `head`: exit
    // quietly on a closed stdout instead of panicking.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    std::process::exit(swapnet::cli::main());
}
