#include <string>
#include <vector>

#include "fffner/pipeline.h"

int main(int argc, char **argv) {
  return fffner::RunCli(std::vector<std::string>(argv + 1, argv + argc));
}
