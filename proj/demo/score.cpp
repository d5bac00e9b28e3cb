// Scores comments from stdin with a trained checkpoint, one line each.
// Usage: toxseq_score <checkpoint> <vocab>  < comments.txt
#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "toxseq/toxseq.hpp"

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: " << argv[0] << " <checkpoint> <vocab>\n";
    return 1;
  }
  try {
    const auto vocab = toxseq::Vocab::load(argv[2]);
    const auto loaded = toxseq::load_checkpoint(argv[1], vocab.size());
    const auto& model = loaded.model;
    std::string line;
    while (std::getline(std::cin, line)) {
      const auto ex = toxseq::encode(line, vocab, model.config.encoder.max_len);
      const auto pred = toxseq::predict(model, ex);
      std::printf("%.3f %s  %s\n", pred.p_toxic, pred.label ? "toxic" : "ok   ", line.c_str());
    }
  } catch (const std::exception& e) {
    std::cerr << "toxseq_score: " << e.what() << "\n";
    return 2;
  }
}
