fn main() {
    // die quietly when stdout is closed early (e.g. piped into `head`)
    #[cfg(unix)]
    unsafe {
        libc_sigpipe_default();
    }
    std::process::exit(dualsrc::cli::run(std::env::args_os()));
}

#[cfg(unix)]
unsafe fn libc_sigpipe_default() {
    use std::os::raw::c_int;
    const SIGPIPE: c_int = 13;
    const SIG_DFL: usize = 0;
    unsafe extern "C" {
        fn signal(signum: c_int, handler: usize) -> usize;
    }
    unsafe {
        signal(SIGPIPE, SIG_DFL);
    }
}
