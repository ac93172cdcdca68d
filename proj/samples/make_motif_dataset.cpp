// Writes the two-class edge-motif dataset in TU format, ready for `egnn train`.
//
//   make_motif_dataset <out-dir> [seed] [graphs]

#include <cstdlib>
#include <iostream>

#include "egnn/synthetic.hpp"
#include "egnn/tu_format.hpp"

int main(int argc, char** argv)
{
    if (argc < 2) {
        std::cerr << "usage: " << argv[0] << " <out-dir> [seed] [graphs]\n";
        return 1;
    }
    const std::uint64_t seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 0;
    const std::size_t graphs = argc > 3 ? std::strtoull(argv[3], nullptr, 10) : 20;
    const egnn::Dataset ds = egnn::make_motif_dataset(seed, graphs);
    egnn::write_tu_dataset(ds, argv[1]);
    std::cout << "wrote " << ds.size() << " graphs to " << argv[1] << '\n';
    return 0;
}
