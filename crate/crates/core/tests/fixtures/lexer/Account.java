package bank.core;

import java.util.ArrayList;
import java.util.List;

/** Ledger account. */
public class Account {
    private final String owner;
    private long balanceCents = 0L;
    private List<String> history = new ArrayList<>();

    public Account(String owner) {
        this.owner = owner;
    }

    public boolean withdraw(long amount) {
        if (amount <= 0 || amount > balanceCents) {
            history.add("rejected: " + amount);
            return false;
        }
        balanceCents -= amount; // debit
        char sep = '\n';
        history.add(owner + sep + String.format("%d", amount));
        return true;
    }

    @Override
    public String toString() {
        return "Account[" + owner + "]";
    }
}
