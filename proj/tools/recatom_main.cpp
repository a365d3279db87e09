#include "recatom/cli.hpp"

int main(int argc, char** argv) {
    return recatom::cli::run(argc, argv);
}
