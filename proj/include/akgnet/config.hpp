#pragma once

#include <filesystem>
#include <string>

#include "akgnet/data.hpp"
#include "akgnet/model.hpp"
#include "akgnet/trainer.hpp"

namespace akgnet::config {

/// Merged view of the training, model and generator settings, loadable
/// from a flat key-value file ("key = value" lines, '#' comments) with
/// flag overrides on top. Defaults follow the reference hyperparameters.
struct RunConfig {
    trainer::TrainConfig train;
    model::ModelConfig model;
    data::GeneratorConfig gen;

    static RunConfig load(const std::filesystem::path& file);
    void apply(const std::string& key, const std::string& value);
    void save(const std::filesystem::path& file) const;
    std::string to_string() const;
};

}  // namespace akgnet::config
