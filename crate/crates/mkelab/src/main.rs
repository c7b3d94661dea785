fn main() {
    std::process::exit(mkelab::cli::main_entry());
}
