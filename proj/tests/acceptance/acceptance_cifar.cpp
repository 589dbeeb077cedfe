// The two training criteria on the real CIFAR-10 subsets: the first 5000 training and the first
// 1000 test records. Exits 77 (skipped) unless LCNET_CIFAR10_DIR names the binary-format data.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>

#include "training_criteria.hpp"

using namespace lcnet;
using namespace lcnet::acceptance;

int main(int argc, char** argv) {
  const char* env = std::getenv("LCNET_CIFAR10_DIR");
  if (env == nullptr || !std::filesystem::is_directory(env)) {
    std::printf("[SKIP] 7    sparsity responds to L1 (CIFAR-10): LCNET_CIFAR10_DIR not set or not a directory\n");
    std::printf("[SKIP] 8    desk-scale training smoke (CIFAR-10): LCNET_CIFAR10_DIR not set or not a directory\n");
    return 77;
  }
  const std::filesystem::path dir(env);
  std::optional<Dataset> train_set, test;
  std::optional<ScratchRun> backbone;
  auto load = [&] {
    if (train_set) return;
    CifarOptions o;
    o.limit = 5000;
    train_set = load_cifar10(dir, Split::train, o);
    o.limit = 1000;
    o.normalization = train_set->normalization;
    test = load_cifar10(dir, Split::test, o);
  };
  std::vector<Criterion> criteria{
      {"7", "sparsity responds to L1 (CIFAR-10)",
       [&] {
         load();
         backbone = train_from_scratch(*train_set, 0.0);
         return criterion7(backbone->net, *train_set, *test, 1800.0);
       }},
      {"8", "desk-scale training smoke (CIFAR-10)",
       [&] {
         load();
         auto run = train_from_scratch(*train_set, kScratchLambda);
         return criterion8(run, *test, 3600.0);
       }},
  };
  return run_all(criteria, argc, argv);
}
