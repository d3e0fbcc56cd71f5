#include "statlap/pipeline.hpp"

int main(int argc, char** argv)
{
    return statlap::cli_main(argc, argv);
}
