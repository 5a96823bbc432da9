"""
Test Suite for RAG Support System

Comprehensive tests for all components including RAG engine, API endpoints,
and integration workflows.
"""