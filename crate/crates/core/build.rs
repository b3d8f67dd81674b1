fn main() {
    // Complex SVD comes from the system LAPACK.
    println!("cargo:rustc-link-lib=lapack");
}
