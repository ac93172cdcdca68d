#include "egnn/cli.hpp"

int main(int argc, char** argv)
{
    return egnn::cli_main(argc, argv);
}
