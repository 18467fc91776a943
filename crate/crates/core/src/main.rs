fn main() {
    std::process::exit(fdsic_core::cli::main_entry());
}
