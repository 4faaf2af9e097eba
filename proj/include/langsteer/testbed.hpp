#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "langsteer/corpus.hpp"
#include "langsteer/dialects.hpp"
#include "langsteer/model.hpp"
#include "langsteer/train.hpp"

namespace langsteer {

// Desk-scale stand-in for a multilingual model: a toy transformer trained on
// few-shot episodes over synthetic dialects. In an episode the demonstrations
// share one dialect E, the query is in E or in another dialect, and the
// answer is always written in E. The model therefore has to read the answer
// dialect off the demonstrations, which is what a language vector shifts.
struct ToyTestbedSpec {
    DialectSpec dialects = default_dialect_spec();
    ModelConfig model;
    int k = 3;
    int episodes = 6000;
    double mixed_fraction = 0.5;
    double bare_fraction = 0.15;
    TrainOptions train;

    void validate() const;
};

ToyTestbedSpec default_testbed_spec();

TaskTemplate dialect_template(DialectTask task);

struct ToyTestbed {
    DialectCorpus reverse;
    DialectCorpus copy;
    Vocab vocab;

    const DialectCorpus& corpus_for(DialectTask task) const { return task == DialectTask::Reverse ? reverse : copy; }
};

// Both task corpora over one lexicon plus the shared vocabulary.
ToyTestbed build_testbed_data(const DialectSpec& spec);

// Training sequences for the toy model. Abstract strings used by the
// evaluation corpora never appear.
std::vector<TokenSequence> training_episodes(const ToyTestbed& data, const ToyTestbedSpec& spec);

ToyModel train_testbed_model(const ToyTestbed& data, const ToyTestbedSpec& spec, TrainStats* stats = nullptr);

}  // namespace langsteer
