#!/usr/bin/env python3
"""
Script to generate sample datasets for testing.
"""

import os
import argparse

from Core.datasets import save_categorical_csv, save_kv_csv, synth_kv, synth_zipf

def generate_categorical(n=10000, d=100, exponent=1.0, seed=0,
                         output_file="Data/samples/zipf_categorical.csv"):
    """Generate a Zipf-shaped categorical dataset as user_id,item."""
    dataset = synth_zipf(n, d, exponent, seed)
    os.makedirs(os.path.dirname(output_file), exist_ok=True)
    save_categorical_csv(dataset, output_file)
    print(f"Categorical data (n={dataset.n}, d={dataset.d}) saved to {output_file}")
    return dataset

def generate_kv(n=10000, d=100, pairs="fixed,1", values="uniform", seed=0,
                output_file="Data/samples/kv_pairs.csv"):
    """Generate a key-value dataset as user_id,key,value."""
    pairs_law = tuple(p for p in pairs.split(','))
    value_law = tuple(v for v in values.split(','))
    dataset = synth_kv(n, d, pairs_law, value_law, seed)
    os.makedirs(os.path.dirname(output_file), exist_ok=True)
    save_kv_csv(dataset, output_file)
    print(f"Key-value data (n={dataset.n}, d={dataset.d}, {dataset.keys.size} pairs) saved to {output_file}")
    return dataset

def main():
    """Main entry point."""
    parser = argparse.ArgumentParser(description="Generate sample datasets for testing")
    parser.add_argument("--kind", choices=["categorical", "kv"], default="categorical", help="Dataset kind")
    parser.add_argument("--users", type=int, default=10000, help="Number of users")
    parser.add_argument("--domain", type=int, default=100, help="Number of items or keys")
    parser.add_argument("--exponent", type=float, default=1.0, help="Zipf exponent of item popularity")
    parser.add_argument("--pairs", default="fixed,1", help="Pairs-per-user law, e.g. fixed,1 or uniform,1,5")
    parser.add_argument("--values", default="uniform", help="Value law, e.g. uniform, constant,0.5 or beta,2,5")
    parser.add_argument("--seed", type=int, default=0, help="Random seed")
    parser.add_argument("--output", help="Output file path")

    args = parser.parse_args()

    if args.kind == "kv":
        generate_kv(args.users, args.domain, args.pairs, args.values, args.seed,
                    args.output or "Data/samples/kv_pairs.csv")
    else:
        generate_categorical(args.users, args.domain, args.exponent, args.seed,
                             args.output or "Data/samples/zipf_categorical.csv")

if __name__ == "__main__":
    main()
