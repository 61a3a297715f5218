#include "treexfer/tree_model.hpp"

#include <string>
#include <unordered_map>

#include "treexfer/errors.hpp"

namespace treexfer {

std::string to_string(Objective objective) {
    return objective == Objective::binary ? "binary" : "multiclass";
}

namespace {

std::unordered_map<int, int> index_ids(const auto& items, const char* what) {
    std::unordered_map<int, int> index;
    for (int i = 0; i < static_cast<int>(items.size()); ++i) {
        if (!index.emplace(items[i].id, i).second) {
            throw InputError(std::string("duplicate ") + what + " id " + std::to_string(items[i].id));
        }
    }
    return index;
}

}  // namespace

TreeTopology resolve_topology(const TreeStructure& tree) {
    const int n = tree.num_nodes();
    if (tree.num_leaves() != n + 1) {
        throw InputError("tree has " + std::to_string(n) + " split nodes but " +
                         std::to_string(tree.num_leaves()) + " leaves (expected " +
                         std::to_string(n + 1) + ")");
    }
    const auto node_index = index_ids(tree.nodes, "node");
    const auto leaf_index = index_ids(tree.leaves, "leaf");

    std::vector<int> node_refs(n, 0);
    std::vector<int> leaf_refs(tree.num_leaves(), 0);
    auto resolve = [&](const ChildRef& ref, int parent_id) {
        TreeTopology::Child child;
        child.is_leaf = ref.is_leaf;
        const auto& index = ref.is_leaf ? leaf_index : node_index;
        auto it = index.find(ref.id);
        if (it == index.end()) {
            throw InputError("node " + std::to_string(parent_id) + " has dangling child reference to " +
                             (ref.is_leaf ? "leaf " : "node ") + std::to_string(ref.id));
        }
        child.index = it->second;
        ++(ref.is_leaf ? leaf_refs : node_refs)[child.index];
        return child;
    };

    TreeTopology topo;
    topo.left.resize(n);
    topo.right.resize(n);
    for (int i = 0; i < n; ++i) {
        topo.left[i] = resolve(tree.nodes[i].left, tree.nodes[i].id);
        topo.right[i] = resolve(tree.nodes[i].right, tree.nodes[i].id);
    }

    if (n == 0) {
        topo.root = {true, 0};
        return topo;
    }

    int root = -1;
    for (int i = 0; i < n; ++i) {
        if (node_refs[i] == 0) {
            if (root >= 0) {
                throw InputError("tree has more than one root (nodes " + std::to_string(tree.nodes[root].id) +
                                 " and " + std::to_string(tree.nodes[i].id) + ")");
            }
            root = i;
        } else if (node_refs[i] > 1) {
            throw InputError("node " + std::to_string(tree.nodes[i].id) + " is referenced more than once");
        }
    }
    if (root < 0) {
        throw InputError("tree has no root (child references form a cycle)");
    }
    for (int l = 0; l < tree.num_leaves(); ++l) {
        if (leaf_refs[l] != 1) {
            throw InputError("leaf " + std::to_string(tree.leaves[l].id) + " is referenced " +
                             std::to_string(leaf_refs[l]) + " times (expected exactly once)");
        }
    }
    topo.root = {false, root};

    // Every node reachable from the root exactly once means no cycles.
    std::vector<int> stack{root};
    int visited = 0;
    while (!stack.empty()) {
        const int i = stack.back();
        stack.pop_back();
        if (++visited > n) {
            break;
        }
        for (const auto& c : {topo.left[i], topo.right[i]}) {
            if (!c.is_leaf) {
                stack.push_back(c.index);
            }
        }
    }
    if (visited != n) {
        throw InputError("tree contains a cycle or unreachable nodes");
    }
    return topo;
}

void validate(const TreeStructure& tree, int feature_count) {
    resolve_topology(tree);
    for (const auto& node : tree.nodes) {
        if (node.feature < 0 || node.feature >= feature_count) {
            throw InputError("node " + std::to_string(node.id) + " has feature index " +
                             std::to_string(node.feature) + " outside [0, " + std::to_string(feature_count) + ")");
        }
    }
    if (tree.leaves.empty()) {
        throw InputError("tree has no leaves");
    }
    const auto width = tree.leaves.front().value.size();
    for (const auto& leaf : tree.leaves) {
        if (leaf.value.empty() || leaf.value.size() != width) {
            throw InputError("leaf " + std::to_string(leaf.id) + " value length " +
                             std::to_string(leaf.value.size()) + " differs from " + std::to_string(width));
        }
    }
}

void validate(const CanonicalTreeModel& model) {
    if (model.num_class < 1) {
        throw InputError("num_class must be positive");
    }
    if (model.feature_count < 1) {
        throw InputError("feature_count must be positive");
    }
    if (model.objective == Objective::binary && model.num_class != 1) {
        throw InputError("binary objective requires num_class = 1");
    }
    if (model.objective == Objective::multiclass && model.num_class < 2) {
        throw InputError("multiclass objective requires num_class >= 2");
    }
    std::size_t width = 0;
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        try {
            validate(model.trees[t], model.feature_count);
        } catch (const InputError& e) {
            throw InputError("tree " + std::to_string(t) + ": " + e.what());
        }
        const auto w = model.trees[t].leaves.front().value.size();
        if (t == 0) {
            width = w;
        } else if (w != width) {
            throw InputError("tree " + std::to_string(t) + " leaf value length differs from tree 0");
        }
    }
    if (width != 0 && width != 1 && width != static_cast<std::size_t>(model.num_class)) {
        throw InputError("leaf value length must be 1 or num_class");
    }
}

int traverse(const TreeStructure& tree, const TreeTopology& topology, std::span<const double> x) {
    auto at = topology.root;
    while (!at.is_leaf) {
        const auto& node = tree.nodes[at.index];
        at = x[node.feature] <= node.threshold ? topology.left[at.index] : topology.right[at.index];
    }
    return at.index;
}

int traverse(const TreeStructure& tree, std::span<const double> x) {
    return traverse(tree, resolve_topology(tree), x);
}

}  // namespace treexfer
